#include <string>
#include <vector>

#include "synsacc/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return synsacc::cli::run(args);
}
