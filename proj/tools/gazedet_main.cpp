#include <string>
#include <vector>

#include "gazedet/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return gazedet::cli::run(args);
}
