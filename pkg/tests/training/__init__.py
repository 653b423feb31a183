# Training tests package
