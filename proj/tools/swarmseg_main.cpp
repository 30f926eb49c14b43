#include "swarmseg/cli.hpp"

int main(int argc, char** argv) { return swarmseg::run_cli(argc, argv); }
