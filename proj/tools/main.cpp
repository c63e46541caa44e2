#include <iostream>

#include "neuroagent/cli/cli.hpp"

int main(int argc, char** argv) {
    return neuroagent::cli::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
