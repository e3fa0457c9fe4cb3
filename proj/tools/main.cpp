#include "cli.hpp"

int main(int argc, char** argv) { return fans::cli::run(argc, argv); }
