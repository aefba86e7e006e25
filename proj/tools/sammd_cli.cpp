#include <iostream>

#include "sammd/cli.hpp"

int main(int argc, char** argv) { return sammd::run_cli(argc, argv, std::cout, std::cerr); }
