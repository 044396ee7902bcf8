#include "grouppool/cli.hpp"

int main(int argc, char** argv) { return grouppool::cli_main(argc, argv); }
