#include "luq/cli.hpp"

#include <iostream>

int main(int argc, char** argv) {
    try {
        return luq::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
}
