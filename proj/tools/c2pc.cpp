#include <iostream>
#include <string>
#include <vector>

#include "c2pc/cli/cli.hpp"

int main(int argc, char** argv) {
  return c2pc::cli::run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
