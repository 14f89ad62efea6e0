#include <iostream>

#include "bispik/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return bispik::run_cli(args, std::cout, std::cerr);
}
