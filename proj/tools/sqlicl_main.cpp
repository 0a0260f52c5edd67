#include <iostream>
#include <string>
#include <vector>

#include "sqlicl/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return sqlicl::run_cli(args, std::cout, std::cerr);
}
