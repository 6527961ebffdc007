#include <vector>

#include "ctxbank/cli.hpp"

int main(int argc, char** argv) {
  return ctxbank::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
