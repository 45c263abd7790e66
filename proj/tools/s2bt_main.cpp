#include <iostream>
#include <string>
#include <vector>

#include "s2bt/cli/commands.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return s2bt::cli::run(args, std::cout, std::cerr);
}
