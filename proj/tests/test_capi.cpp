#include "bisel/bisel.h"
int main(){return 0;}
