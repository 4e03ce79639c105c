#include <iostream>
#include <string>
#include <vector>

#include "weedid/cli/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return weedid::cli::dispatch(args, std::cout, std::cerr);
}
