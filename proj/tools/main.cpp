#include <iostream>

#include "dfcurate/cli.hpp"

int main(int argc, char** argv) { return dfcurate::run_cli(argc, argv, std::cout, std::cerr); }
