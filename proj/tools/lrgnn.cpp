#include "lrgnn/cli.hpp"

#include <iostream>

int main(int argc, char **argv) {
  const std::vector<std::string> args(argv + 1, argv + argc);
  return lrgnn::run_command(args, std::cout, std::cerr);
}
