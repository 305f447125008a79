#include <iostream>
#include <string>
#include <vector>

#include "escape/cli.hpp"

int main(int argc, char** argv) {
  return escape::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
