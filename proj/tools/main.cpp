#include "cli.hpp"

int main(int argc, char** argv) { return cnnsplit::cli::run(argc, argv); }
