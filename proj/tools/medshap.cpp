#include "medshap/cli.hpp"

#include <iostream>

int main(int argc, char** argv) {
  return medshap::cli::main(argc, argv, std::cout, std::cerr);
}
