#include "maskbd/cli.hpp"

int main(int argc, char** argv) { return maskbd::cli::run(argc, argv); }
