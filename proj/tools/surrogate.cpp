#include <iostream>

#include "surrogate_cli.hpp"

int main(int argc, char** argv) {
  return surrogate::cli::run(argc, argv, std::cout, std::cerr);
}
