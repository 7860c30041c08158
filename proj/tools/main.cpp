#include <vector>

#include "embedkit/cli.hpp"

int main(int argc, char** argv) {
    return embedkit::cli_run(std::vector<std::string>(argv + 1, argv + argc));
}
