#include <iostream>

#include "mrb/cli.hpp"

int main(int argc, char** argv) { return mrb::dispatch(argc, argv, std::cout, std::cerr); }
