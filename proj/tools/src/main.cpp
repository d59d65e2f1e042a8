#include <iostream>
#include <string>
#include <vector>

#include "lrcssm/cli.hpp"

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv + 1, argv + argc);
  return lrcssm::cli::run(args, std::cout, std::cerr);
}
