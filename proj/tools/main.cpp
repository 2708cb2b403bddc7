#include <iostream>
#include <string>
#include <vector>

#include "gmf/cli.hpp"

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv + 1, argv + argc);
  return gmf::run_cli(args, std::cout, std::cerr);
}
