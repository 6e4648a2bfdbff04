#include <iostream>

#include "uom/cli.hpp"

int main(int argc, char** argv) {
  return uom::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
