#include <string>
#include <vector>

#include "nmsap/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return nmsap::cli::run(std::move(args));
}
