#include <vector>
#include <string>

#include "ap/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return ap::cli::run(args);
}
