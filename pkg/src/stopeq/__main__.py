from stopeq.cli import main

main()
