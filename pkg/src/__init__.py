# facemask-asm - face shape models and mask overlay
