# Tests package for AI-Based Security Enhancements

