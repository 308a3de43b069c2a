#include "mdvsc/harness.h"

int main(int argc, char** argv) { return mdvsc::harness::run_cli(argc, argv); }
