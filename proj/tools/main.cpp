#include "factmatch/cli.hpp"

int main(int argc, char** argv) { return factmatch::cli::dispatch(argc, argv); }
