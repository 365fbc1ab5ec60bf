#include <iostream>

#include "cg2a/harness.hpp"

int main(int argc, char** argv) { return cg2a::harness::run(argc, argv, std::cout, std::cerr); }
