#include <iostream>
#include <string>
#include <vector>

#include "confset/cli.hpp"

int main(int argc, char** argv) {
  return confset::cli::run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
