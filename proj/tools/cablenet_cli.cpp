#include <cablenet/cli.hpp>

#include <iostream>

int main(int argc, char** argv) { return cablenet::cli::main(argc, argv, std::cout, std::cerr); }
