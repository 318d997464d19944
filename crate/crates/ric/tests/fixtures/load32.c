static ulong32 load32(const unsigned char *key)
{
   ulong32 x;
   asm __volatile__ ("movl (%1),%0; bswapl %0" : "=r"(x) : "r"(key) : "memory");
   return x;
}
