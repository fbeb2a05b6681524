#include <iostream>

#include "wfn/cli.hpp"

int main(int argc, char** argv) {
  return wfn::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
