#include <iostream>

#include "headprobe/cli.hpp"

int main(int argc, char** argv) { return headprobe::run_cli(argc, argv, std::cout, std::cerr); }
