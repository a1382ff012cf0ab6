#include "cli.hpp"

int main(int argc, char** argv) { return omni::cli::main(argc, argv); }
