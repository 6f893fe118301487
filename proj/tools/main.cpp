#include <iostream>

#include "bmschain/cli.hpp"

int main(int argc, char **argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return bmschain::cli::run(args, std::cout, std::cerr);
}
