#include <iostream>
#include <string>
#include <vector>

#include "snnconv/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    return snn::run_cli(args, std::cout, std::cerr);
}
