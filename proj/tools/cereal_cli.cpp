#include <iostream>

#include "cereal/cli.hpp"

int main(int argc, char** argv) {
  return cereal::cli_run({argv + 1, argv + argc}, std::cout, std::cerr);
}
