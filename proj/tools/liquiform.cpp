#include <iostream>

#include "liquiform/cli.hpp"

int main(int argc, char** argv) {
  return liquiform::run_cli(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
