#include <iostream>

#include "statt/cli.hpp"

int main(int argc, char** argv) {
  return statt::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
