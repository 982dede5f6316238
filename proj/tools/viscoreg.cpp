#include "viscoreg/cli.hpp"

int main(int argc, char** argv) { return viscoreg::cli::run(argc, argv); }
