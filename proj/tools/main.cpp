#include "augseg/cli.hpp"

int main(int argc, char** argv) { return augseg::cli::dispatch(argc, argv); }
