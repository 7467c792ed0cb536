#include <iostream>

#include "xmodal/cli.hpp"

int main(int argc, char** argv) {
    return xmodal::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
