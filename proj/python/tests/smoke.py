import jacobilab
