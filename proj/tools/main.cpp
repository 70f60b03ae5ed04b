#include "hashodf/cli.hpp"

int main(int argc, char** argv) { return hashodf::run_cli(argc, argv); }
