# API Routes Module
