#include <iostream>
#include <string>
#include <vector>

#include "defembed/cli.hpp"

extern char** environ;

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return defembed::run_cli(args, std::cout, std::cerr, environ);
}
