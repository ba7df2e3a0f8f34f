#include <iostream>

#include "fundsel/cli.hpp"

int main(int argc, char** argv) {
    return fundsel::cli::run(argc, argv, std::cout, std::cerr);
}
