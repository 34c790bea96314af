#include <string>
#include <vector>

#include "fracdev/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return fracdev::cli::run(args);
}
