#include <iostream>

#include "bimi/commands.hpp"

int main(int argc, char** argv) { return bimi::run_cli(argc, argv, std::cout, std::cerr); }
