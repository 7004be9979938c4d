#include "fedarmor/cli.hpp"

int main(int argc, char** argv) { return fedarmor::cli_main(argc, argv); }
