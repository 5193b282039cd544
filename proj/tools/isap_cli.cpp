#include "isap/cli.hpp"

int main(int argc, char** argv) { return isap::cli::run(argc, argv); }
