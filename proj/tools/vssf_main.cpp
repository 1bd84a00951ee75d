#include <iostream>

#include "vssf/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return vssf::run_cli(args, std::cout, std::cerr);
}
