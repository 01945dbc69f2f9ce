#include "fcmi/cli.hpp"

int main(int argc, char** argv) {
    return fcmi::cli::run(std::vector<std::string>(argv, argv + argc));
}
