#include <iostream>

#include "manifest/cli.hpp"

int main(int argc, char** argv) { return manifest::run_cli(argc, argv, std::cout, std::cerr); }
