#include <iostream>
#include <string>
#include <vector>

#include "cnnprobe/cli.hpp"

int main(int argc, char** argv) {
  return cnnprobe::run_cli(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
