# Test scripts for AI-Based Security Enhancements
# These are not malware - they simulate behaviors for testing the detection system

