#include <iostream>

#include "ctp/cli/cli.hpp"

int main(int argc, char** argv) {
  return ctp::run_cli(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
