#include <iostream>
#include <string>
#include <vector>

#include "condel/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return condel::run_cli(args, std::cout, std::cerr);
}
