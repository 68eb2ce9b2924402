#include <iostream>
#include <string>
#include <vector>

#include "losa/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return losa::dispatch(args, std::cout, std::cerr);
}
