#include <iostream>

#include "deepmorph/cli.hpp"

int main(int argc, char** argv) {
  return deepmorph::run_cli(argc, argv, std::cout, std::cerr);
}
