#include <iostream>
#include <string>
#include <vector>

#include "acsseg/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return acsseg::run_cli(args, std::cout, std::cerr);
}
