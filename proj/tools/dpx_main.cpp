#include <iostream>
#include <string>
#include <vector>

#include "dpx/cli.hpp"

int main(int argc, char** argv) {
  return dpx::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
