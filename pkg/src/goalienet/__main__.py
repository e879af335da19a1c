from goalienet.cli import main

main()
