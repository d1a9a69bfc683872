#include "cli.hpp"

int main(int argc, char** argv) { return hhmm::cli::run(argc, argv); }
