#include "lowres_mt/cli.hpp"

int main(int argc, char** argv) { return lowres_mt::cli::run(std::vector<std::string>(argv + 1, argv + argc)); }
