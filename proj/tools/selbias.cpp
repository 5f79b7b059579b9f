#include <iostream>
#include <string>
#include <vector>

#include "selbias/cli.hpp"

int main(int argc, char** argv) {
  return selbias::cli::run_main(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
