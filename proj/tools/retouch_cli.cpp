#include <iostream>

#include "retouch/cli.hpp"

int main(int argc, char** argv) {
    return retouch::cli_main(argc, argv, std::cout, std::cerr);
}
