#include "longdoc/cli.hpp"

int main(int argc, char** argv) { return longdoc::cli::run(argc, argv); }
